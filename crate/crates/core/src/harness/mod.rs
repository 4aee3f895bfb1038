//! Alternating-optimization drivers for the three schemes and the Monte-Carlo
//! experiment runner built on them.

mod experiment;

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::Rng;

pub use experiment::{
    apply_sweep, run_experiment, run_experiment_to_file, ExperimentSpec, ResultTable, SweepVariable, TrialResult,
    CSV_HEADER,
};

use crate::channel::assemble_factors;
use crate::error::{Error, Result};
use crate::model::{greedy_packing, sample_channel, AntennaLayout, ChannelRealization, Position, SystemConfig, C64};
use crate::ofdm_oracle::{modulate, propagate_and_demodulate};
use crate::position_opt::{optimize_layout, PositionGrid};
use crate::transceiver::{full_power_precoders, overall_mse, update_combiners, update_precoders, TransceiverState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Proposed,
    Fpa,
    Eas,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Fpa, Scheme::Eas];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Fpa => "fpa",
            Scheme::Eas => "eas",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "proposed" => Ok(Scheme::Proposed),
            "fpa" => Ok(Scheme::Fpa),
            "eas" => Ok(Scheme::Eas),
            other => Err(Error::invalid("schemes", format!("unknown scheme `{other}`"))),
        }
    }
}

/// Outcome of one AO run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: TransceiverState,
    pub layout: AntennaLayout,
    pub mse: f64,
    /// Overall MSE after initialization and after every AO iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// The fixed reference layout: the four-antenna line at `±λ/2, ±3λ/2` for
/// M = 4, otherwise a `λ/2`-spaced line on the x axis centered at the origin.
/// Falls back to a greedy lattice packing if that line is infeasible.
pub fn fpa_layout(cfg: &SystemConfig) -> AntennaLayout {
    let lam = cfg.wavelength;
    let m_ant = cfg.num_antennas;
    let line = if m_ant == 4 {
        [-1.5, -0.5, 0.5, 1.5]
            .iter()
            .map(|c| Position::new(c * lam, 0.0))
            .collect()
    } else {
        let center = (m_ant as f64 - 1.0) / 2.0;
        (0..m_ant)
            .map(|m| Position::new((m as f64 - center) * lam / 2.0, 0.0))
            .collect()
    };
    let layout = AntennaLayout::new(line);
    if layout.is_feasible(&cfg.region, cfg.min_spacing) {
        layout
    } else {
        greedy_packing(&cfg.region, cfg.grid_step, cfg.min_spacing, m_ant).expect("validated config admits a packing")
    }
}

/// The `2M` selection candidates: `x ∈ {-(M-1), …, -1, 1, …, M-1}·λ/2`
/// (odd multiples) and `y ∈ {-λ/2, λ/2}`, ordered y-major.
pub fn eas_candidates(cfg: &SystemConfig) -> Vec<Position> {
    let half = cfg.wavelength / 2.0;
    let m_ant = cfg.num_antennas as i64;
    [-1.0, 1.0]
        .iter()
        .flat_map(|&y| (0..m_ant).map(move |i| Position::new((2 * i - (m_ant - 1)) as f64 * half, y * half)))
        .collect()
}

fn ao_loop(
    cfg: &SystemConfig,
    chan: &ChannelRealization,
    layout: AntennaLayout,
    start: Option<&TransceiverState>,
    grid: Option<&PositionGrid>,
) -> Result<Solution> {
    let mut layout = layout;
    let mut fc = assemble_factors(&layout, chan, cfg.num_subcarriers, cfg.wavelength);
    let (mut b, mut w) = match start {
        Some(s) => (s.precoders.clone(), s.combiners.clone()),
        None => {
            let b = full_power_precoders(cfg.num_users, cfg.num_subcarriers, cfg.power_budget);
            let w = update_combiners(&fc, &b, cfg.noise_power)?;
            (b, w)
        }
    };
    let mut mse = overall_mse(&fc, &b, &w, cfg.noise_power);
    let mut trace = vec![mse];
    let mut iterations = 0;
    while iterations < cfg.max_ao_iters {
        iterations += 1;
        b = update_precoders(&fc, &w, cfg.power_budget);
        if let Some(grid) = grid {
            let out = optimize_layout(&layout, &fc, chan, &b, cfg, grid)?;
            layout = out.layout;
            fc = out.channel;
        }
        w = update_combiners(&fc, &b, cfg.noise_power)?;
        let next = overall_mse(&fc, &b, &w, cfg.noise_power);
        trace.push(next);
        let gain = mse - next;
        mse = next;
        if gain <= cfg.ao_tol * trace[trace.len() - 2] {
            break;
        }
    }
    Ok(Solution {
        state: TransceiverState {
            precoders: b,
            combiners: w,
        },
        layout,
        mse,
        trace,
        iterations,
    })
}

/// AO over precoders and combiners only, at a fixed layout.
pub fn solve_fixed_layout(cfg: &SystemConfig, chan: &ChannelRealization, layout: AntennaLayout) -> Result<Solution> {
    ao_loop(cfg, chan, layout, None, None)
}

pub fn solve_fpa(cfg: &SystemConfig, chan: &ChannelRealization) -> Result<Solution> {
    solve_fixed_layout(cfg, chan, fpa_layout(cfg))
}

/// Joint AO over precoders, positions and combiners, warm-started from a
/// converged fixed-layout solution. The returned trace continues the one in
/// `start`, and the final MSE never exceeds `start.mse`.
pub fn solve_proposed_from(cfg: &SystemConfig, chan: &ChannelRealization, start: &Solution) -> Result<Solution> {
    let grid = PositionGrid::for_config(cfg, chan);
    let joint = ao_loop(cfg, chan, start.layout.clone(), Some(&start.state), Some(&grid))?;
    let mut trace = start.trace.clone();
    trace.extend_from_slice(&joint.trace[1..]);
    Ok(Solution {
        trace,
        iterations: start.iterations + joint.iterations,
        ..joint
    })
}

/// The full scheme: fixed-layout AO at the reference layout, then joint AO
/// with position updates.
pub fn solve_proposed(cfg: &SystemConfig, chan: &ChannelRealization) -> Result<Solution> {
    let fpa = solve_fpa(cfg, chan)?;
    solve_proposed_from(cfg, chan, &fpa)
}

#[derive(Debug, Clone)]
pub struct EasSolution {
    pub best: Solution,
    pub subsets_evaluated: usize,
}

/// Fixed-layout AO on every M-subset of [`eas_candidates`]; keeps the lowest MSE.
pub fn solve_eas(cfg: &SystemConfig, chan: &ChannelRealization) -> Result<EasSolution> {
    let candidates = eas_candidates(cfg);
    let mut best: Option<Solution> = None;
    let mut evaluated = 0;
    for subset in candidates.into_iter().combinations(cfg.num_antennas) {
        let layout = AntennaLayout::new(subset);
        if !layout.is_feasible(&cfg.region, cfg.min_spacing) {
            continue;
        }
        evaluated += 1;
        let sol = solve_fixed_layout(cfg, chan, layout)?;
        if best.as_ref().is_none_or(|b| sol.mse < b.mse) {
            best = Some(sol);
        }
    }
    let best = best.ok_or(Error::InfeasibleRegion {
        antennas: cfg.num_antennas,
        min_spacing: cfg.min_spacing,
    })?;
    Ok(EasSolution {
        best,
        subsets_evaluated: evaluated,
    })
}

/// Result of checking the frequency-domain model against the sample-level link.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub instances: usize,
    pub max_relative_error: f64,
}

/// Draws `instances` random channels, layouts and symbol blocks and compares
/// `z_n` from the time-domain link with `H_n d_n`.
pub fn check_model_equivalence<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    cp_len: usize,
    instances: usize,
    rng: &mut R,
) -> Result<EquivalenceReport> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let chan = sample_channel(cfg, rng);
        let layout = random_feasible_layout(cfg, rng);
        let symbols = DMatrix::from_fn(cfg.num_users, cfg.num_subcarriers, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let frame = modulate(&symbols, cp_len, cfg.max_delay)?;
        let z = propagate_and_demodulate(&frame, &chan, &layout, cfg.wavelength)?;
        let fc = assemble_factors(&layout, &chan, cfg.num_subcarriers, cfg.wavelength);
        for (i, zn) in z.iter().enumerate() {
            let model = fc.h(i) * symbols.column(i);
            worst = worst.max((zn - &model).norm() / model.norm().max(f64::MIN_POSITIVE));
        }
    }
    Ok(EquivalenceReport {
        instances,
        max_relative_error: worst,
    })
}

/// Rejection-samples a feasible layout with uniform positions in the region,
/// falling back to the greedy packing after many failed draws.
pub fn random_feasible_layout<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> AntennaLayout {
    let r = cfg.region;
    for _ in 0..10_000 {
        let layout = AntennaLayout::new(
            (0..cfg.num_antennas)
                .map(|_| {
                    Position::new(
                        r.x_lo + (r.x_hi - r.x_lo) * rng.random::<f64>(),
                        r.y_lo + (r.y_hi - r.y_lo) * rng.random::<f64>(),
                    )
                })
                .collect(),
        );
        if layout.is_feasible(&r, cfg.min_spacing) {
            return layout;
        }
    }
    greedy_packing(&r, cfg.grid_step, cfg.min_spacing, cfg.num_antennas).expect("validated config admits a packing")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::trial_rng;

    #[test]
    fn reference_layout_coordinates() {
        let cfg = SystemConfig::default();
        let lam = cfg.wavelength;
        let xs: Vec<f64> = fpa_layout(&cfg).positions().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![-1.5 * lam, -0.5 * lam, 0.5 * lam, 1.5 * lam]);
        assert!(fpa_layout(&cfg).positions().iter().all(|p| p.y == 0.0));

        let two = SystemConfig {
            num_antennas: 2,
            ..cfg.clone()
        };
        let l = fpa_layout(&two);
        assert_eq!(
            l.positions(),
            &[Position::new(-lam / 4.0, 0.0), Position::new(lam / 4.0, 0.0)]
        );
    }

    #[test]
    fn candidate_lattice() {
        let cfg = SystemConfig::default();
        let c = eas_candidates(&cfg);
        assert_eq!(c.len(), 8);
        let half = cfg.wavelength / 2.0;
        for p in &c {
            assert!([-3.0, -1.0, 1.0, 3.0].iter().any(|m| p.x == m * half));
            assert!(p.y == half || p.y == -half);
        }
    }

    #[test]
    fn eas_counts_all_subsets() {
        let cfg = SystemConfig {
            num_subcarriers: 16,
            max_delay: 8,
            ..SystemConfig::default()
        };
        let chan = sample_channel(&cfg, &mut trial_rng(1, 0));
        let eas = solve_eas(&cfg, &chan).unwrap();
        assert_eq!(eas.subsets_evaluated, 70);
        assert!(eas.best.layout.is_feasible(&cfg.region, cfg.min_spacing));
        // No hand-picked subset does better.
        let picked = AntennaLayout::new(eas_candidates(&cfg)[2..6].to_vec());
        let sol = solve_fixed_layout(&cfg, &chan, picked).unwrap();
        assert!(eas.best.mse <= sol.mse);
    }

    #[test]
    fn proposed_dominates_reference_layout() {
        let cfg = SystemConfig {
            num_subcarriers: 16,
            max_delay: 8,
            ..SystemConfig::default()
        };
        for trial in 0..3 {
            let chan = sample_channel(&cfg, &mut trial_rng(2, trial));
            let fpa = solve_fpa(&cfg, &chan).unwrap();
            let prop = solve_proposed_from(&cfg, &chan, &fpa).unwrap();
            assert!(prop.mse <= fpa.mse + 1e-9);
            assert!(prop.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0]));
            assert!(prop.layout.is_feasible(&cfg.region, cfg.min_spacing));
            assert!(prop.state.max_precoder_power() <= cfg.power_budget + 1e-12);
        }
    }

    #[test]
    fn vanishing_noise_drives_mse_to_zero() {
        let cfg = SystemConfig {
            num_users: 3,
            num_subcarriers: 16,
            max_delay: 8,
            noise_power: 1e-10,
            ..SystemConfig::default()
        };
        for trial in 0..3 {
            let chan = sample_channel(&cfg, &mut trial_rng(3, trial));
            let sol = solve_proposed(&cfg, &chan).unwrap();
            assert!(sol.mse < 1e-4, "trial {trial}: {}", sol.mse);
        }
    }

    #[test]
    fn position_step_ablation_never_wins() {
        let cfg = SystemConfig {
            num_subcarriers: 16,
            max_delay: 8,
            power_budget: 100.0,
            ..SystemConfig::default()
        };
        for trial in 0..4 {
            let chan = sample_channel(&cfg, &mut trial_rng(4, trial));
            let without = solve_fixed_layout(&cfg, &chan, fpa_layout(&cfg)).unwrap();
            let with = solve_proposed(&cfg, &chan).unwrap();
            assert!(with.mse <= without.mse + 1e-9);
            assert_eq!(&with.trace[..without.trace.len()], &without.trace[..]);
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("sca".parse::<Scheme>().is_err());
    }
}
